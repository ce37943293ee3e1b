//! Result files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::expr::PriorityFunction;
use crate::search::{AblationMode, LogRecord};

use super::experiment::{ExperimentReport, ResultRow};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SEARCH_LOG: &str = "search.log.jsonl";
pub const BEST_POLICY: &str = "best_policy.txt";
pub const INVOCATION_JSON: &str = "invocation.json";
pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub controller: String,
    pub n: usize,
    pub travel_time_mean: f64,
    pub travel_time_std: f64,
    pub throughput_mean: f64,
    pub throughput_std: f64,
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups rows by (scenario, controller), preserving first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let key = (r.scenario.clone(), r.controller.clone());
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), Vec::new())
        });
        g.0.push(r.avg_travel_time);
        g.1.push(r.throughput);
    }
    order
        .into_iter()
        .map(|key| {
            let (tt, tp) = &groups[&key];
            let (tm, ts) = mean_std(tt);
            let (pm, ps) = mean_std(tp);
            SummaryRow {
                scenario: key.0,
                controller: key.1,
                n: tt.len(),
                travel_time_mean: tm,
                travel_time_std: ts,
                throughput_mean: pm,
                throughput_std: ps,
            }
        })
        .collect()
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_log(path: &Path, log: &[LogRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in log {
        serde_json::to_writer(&mut w, rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Writes one policy per line.
pub fn write_policies<'a>(
    path: &Path,
    policies: impl IntoIterator<Item = &'a PriorityFunction>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in policies {
        writeln!(w, "{}", p.render())?;
    }
    w.flush()?;
    Ok(())
}

/// Every policy in every `best_policy.txt` under `dir`, in path order.
pub fn collect_policies(dir: &Path) -> Result<Vec<PriorityFunction>> {
    let mut files = Vec::new();
    find_files(dir, BEST_POLICY, &mut files)?;
    files.sort();
    let mut out = Vec::new();
    for f in files {
        for line in fs::read_to_string(&f)?.lines() {
            if !line.trim().is_empty() {
                out.push(PriorityFunction::parse(line)?);
            }
        }
    }
    Ok(out)
}

fn find_files(dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_files(&path, name, out)?;
        } else if path.file_name().is_some_and(|n| n == name) {
            out.push(path);
        }
    }
    Ok(())
}

/// Writes `results.csv`, `summary.json`, the search logs and
/// `best_policy.txt`. A single search run logs to `search.log.jsonl`;
/// several runs log to `logs/<controller>_seed<k>.jsonl`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_rows(&dir.join(RESULTS_CSV), &report.rows)?;
    write_json(&dir.join(SUMMARY_JSON), &summarize(&report.rows))?;
    match report.trained.as_slice() {
        [] => {}
        [one] => write_log(&dir.join(SEARCH_LOG), &one.outcome.log)?,
        many => {
            let logs = dir.join("logs");
            fs::create_dir_all(&logs)?;
            for t in many {
                let name = format!("{}_seed{}.jsonl", t.controller.replace(':', "_"), t.seed);
                write_log(&logs.join(name), &t.outcome.log)?;
            }
        }
    }
    if !report.trained.is_empty() {
        write_policies(
            &dir.join(BEST_POLICY),
            report.trained.iter().map(|t| &t.outcome.best),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Invocation<'a, C: Serialize> {
    pub argv: Vec<String>,
    pub version: &'a str,
    pub config: C,
}

pub fn write_invocation<C: Serialize>(dir: &Path, config: C) -> Result<()> {
    fs::create_dir_all(dir)?;
    let inv = Invocation {
        argv: std::env::args().collect(),
        version: env!("CARGO_PKG_VERSION"),
        config,
    };
    write_json(&dir.join(INVOCATION_JSON), &inv)
}

/// Mean travel time per seed, one column per ablation mode.
pub fn ablation_table(
    rows: &[ResultRow],
    modes: &[AblationMode],
) -> (Vec<String>, Vec<(String, Vec<f64>)>) {
    let names: Vec<String> = modes
        .iter()
        .map(|&m| super::experiment::ControllerSpec::Search(m).to_string())
        .collect();
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let cell = |seed: Option<u64>, name: &str| {
        let xs: Vec<f64> = rows
            .iter()
            .filter(|r| r.controller == name && seed.is_none_or(|s| r.seed == s))
            .map(|r| r.avg_travel_time)
            .collect();
        mean_std(&xs).0
    };
    let mut table: Vec<(String, Vec<f64>)> = seeds
        .iter()
        .map(|&s| {
            (
                s.to_string(),
                names.iter().map(|n| cell(Some(s), n)).collect(),
            )
        })
        .collect();
    table.push(("mean".into(), names.iter().map(|n| cell(None, n)).collect()));
    let header = modes.iter().map(|m| m.to_string()).collect();
    (header, table)
}

pub fn write_ablation(path: &Path, rows: &[ResultRow], modes: &[AblationMode]) -> Result<()> {
    let (header, table) = ablation_table(rows, modes);
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["seed".to_string()];
    head.extend(header);
    w.write_record(&head)?;
    for (label, vals) in table {
        let mut rec = vec![label];
        rec.extend(vals.iter().map(|v| format!("{v:.4}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
