//! One-parameter sweeps over the experiment and their CSV / JSON export.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastream::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::MetricSummary;
use crate::federation::{run_on_dataset, CommLedger, ExperimentConfig, ExperimentReport};

pub const CSV_HEADER: &str = "param,value,fold_avg_accuracy,fold_avg_precision,fold_avg_recall,fold_avg_fscore,mean_client_recall,label_requests,model_bytes";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Clients,
    Rounds,
    Budget,
    Grace,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Clients => "clients",
            SweepParam::Rounds => "rounds",
            SweepParam::Budget => "budget",
            SweepParam::Grace => "grace",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let integer = || -> Result<usize> {
            if value.fract() != 0.0 || value < 1.0 || !value.is_finite() {
                return Err(Error::Config(format!(
                    "{} needs a positive integer, got {value}",
                    self.as_str()
                )));
            }
            Ok(value as usize)
        };
        let mut config = base.clone();
        match self {
            SweepParam::Clients => config.clients = integer()?,
            SweepParam::Rounds => config.rounds = integer()?,
            SweepParam::Grace => config.grace = integer()?,
            SweepParam::Budget => config.budget = value,
        }
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clients" => Ok(SweepParam::Clients),
            "rounds" => Ok(SweepParam::Rounds),
            "budget" => Ok(SweepParam::Budget),
            "grace" => Ok(SweepParam::Grace),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (clients, rounds, budget, grace)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    pub base: ExperimentConfig,
}

impl SweepSpec {
    pub fn new(parameter: SweepParam, values: Vec<f64>, base: ExperimentConfig) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("a sweep needs at least one value".into()));
        }
        let spec = SweepSpec {
            parameter,
            values,
            base,
        };
        for index in 0..spec.values.len() {
            spec.cell_config(index)?;
        }
        Ok(spec)
    }

    /// Parses `PARAM=v1,v2,...`.
    pub fn parse(text: &str, base: ExperimentConfig) -> Result<Self> {
        let (name, list) = text
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep must look like PARAM=v1,v2, got `{text}`")))?;
        let parameter: SweepParam = name.trim().parse()?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad sweep value `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        SweepSpec::new(parameter, values, base)
    }

    /// Config of cell `index`; its seed is the base seed xor the index.
    pub fn cell_config(&self, index: usize) -> Result<ExperimentConfig> {
        let mut config = self.parameter.apply(&self.base, self.values[index])?;
        config.seed = self.base.seed ^ index as u64;
        Ok(config)
    }

    /// `PARAM=v1,v2,...`, as accepted by [`SweepSpec::parse`].
    pub fn to_arg(&self) -> String {
        let values: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        format!("{}={}", self.parameter, values.join(","))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub final_ensemble: MetricSummary,
    pub final_mean_client: MetricSummary,
    pub label_requests: u64,
    pub model_bytes: u64,
    pub report: ExperimentReport,
}

impl CellResult {
    fn from_report(report: ExperimentReport) -> Self {
        CellResult {
            final_ensemble: report.final_ensemble(),
            final_mean_client: report.final_mean_client(),
            label_requests: report.label_requests(),
            model_bytes: report.model_bytes(),
            report,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    /// Swept value; `None` for a plain single run.
    pub value: Option<f64>,
    pub config: ExperimentConfig,
    pub outcome: std::result::Result<CellResult, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: Option<SweepParam>,
    /// Flags that reproduce the invocation.
    pub args: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn successes(&self) -> impl Iterator<Item = (Option<f64>, &CellResult)> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|c| (r.value, c)))
    }

    pub fn cell(&self, value: f64) -> Option<&CellResult> {
        self.rows
            .iter()
            .find(|r| r.value == Some(value))
            .and_then(|r| r.outcome.as_ref().ok())
    }
}

/// Runs every cell; a failing cell is recorded and the others continue.
pub fn run_sweep(dataset: &Dataset, spec: &SweepSpec) -> SweepTable {
    let rows = (0..spec.values.len())
        .into_par_iter()
        .map(|index| {
            let value = spec.values[index];
            let config = spec.cell_config(index).unwrap_or_else(|_| spec.base.clone());
            let outcome = spec
                .cell_config(index)
                .and_then(|c| run_on_dataset(dataset, &c))
                .map(CellResult::from_report)
                .map_err(|e| e.to_string());
            SweepRow {
                value: Some(value),
                config,
                outcome,
            }
        })
        .collect();
    let mut args = spec.base.to_args();
    args.push("--sweep".into());
    args.push(spec.to_arg());
    SweepTable {
        parameter: Some(spec.parameter),
        args,
        rows,
    }
}

/// A single experiment as a one-row table.
pub fn run_single(dataset: &Dataset, config: &ExperimentConfig) -> SweepTable {
    SweepTable {
        parameter: None,
        args: config.to_args(),
        rows: vec![SweepRow {
            value: None,
            config: config.clone(),
            outcome: run_on_dataset(dataset, config)
                .map(CellResult::from_report)
                .map_err(|e| e.to_string()),
        }],
    }
}

/// Sidecar location: the CSV path with a `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn render_csv(table: &SweepTable) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    let param = table.parameter.map_or("none", SweepParam::as_str);
    for row in &table.rows {
        let value = row.value.map(|v| v.to_string()).unwrap_or_default();
        match &row.outcome {
            Ok(cell) => {
                let e = &cell.final_ensemble;
                out.push_str(&format!(
                    "{param},{value},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                    e.accuracy,
                    e.precision,
                    e.recall,
                    e.f_score,
                    cell.final_mean_client.recall,
                    cell.label_requests,
                    cell.model_bytes
                ));
            }
            Err(_) => out.push_str(&format!("{param},{value},,,,,,,\n")),
        }
    }
    out
}

#[derive(Serialize)]
struct Sidecar<'a> {
    parameter: Option<SweepParam>,
    args: &'a [String],
    cells: Vec<SidecarCell<'a>>,
}

#[derive(Serialize)]
struct SidecarCell<'a> {
    value: Option<f64>,
    config: &'a ExperimentConfig,
    error: Option<&'a str>,
    ensemble: Option<&'a [MetricSummary]>,
    mean_client: Option<&'a [MetricSummary]>,
    ledgers: Vec<&'a CommLedger>,
}

pub fn render_sidecar(table: &SweepTable) -> Result<String> {
    let cells = table
        .rows
        .iter()
        .map(|row| {
            let ok = row.outcome.as_ref().ok();
            SidecarCell {
                value: row.value,
                config: &row.config,
                error: row.outcome.as_ref().err().map(String::as_str),
                ensemble: ok.map(|c| c.report.ensemble.as_slice()),
                mean_client: ok.map(|c| c.report.mean_client.as_slice()),
                ledgers: ok
                    .map(|c| c.report.folds.iter().map(|f| &f.ledger).collect())
                    .unwrap_or_default(),
            }
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&Sidecar {
        parameter: table.parameter,
        args: &table.args,
        cells,
    })?;
    text.push('\n');
    Ok(text)
}

/// Writes the CSV table to `path` and the per-round JSON sidecar next to it.
pub fn export_results(table: &SweepTable, path: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::invalid("nothing to export"));
    }
    write_file(path, &render_csv(table))?;
    write_file(&sidecar_path(path), &render_sidecar(table)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
