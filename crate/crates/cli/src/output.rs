//! Result tables, the run manifest and the plotting helper.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::error::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PLOT_SCRIPT: &str = "plot_results.py";

/// One scored grid point. `num_channels` is 0 for unchannelized observers.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub num_train: usize,
    pub num_channels: usize,
    pub replicate: usize,
    pub auc: f64,
    pub auc_lo: f64,
    pub auc_hi: f64,
    /// Wall-clock of channel generation (or observer construction).
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub method: Method,
    pub num_train: usize,
    pub num_channels: usize,
    pub replicate: usize,
    pub message: String,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

pub const RESULTS_HEADER: [&str; 8] =
    ["method", "num_train", "num_channels", "replicate", "auc", "auc_lo", "auc_hi", "seconds"];

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(RESULTS_HEADER).map_err(&err)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.num_train.to_string(),
            r.num_channels.to_string(),
            r.replicate.to_string(),
            r.auc.to_string(),
            r.auc_lo.to_string(),
            r.auc_hi.to_string(),
            format!("{:.6}", r.seconds),
        ])
        .map_err(&err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_errors(path: &Path, rows: &[ErrorRow]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["method", "num_train", "num_channels", "replicate", "error"]).map_err(&err)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.num_train.to_string(),
            r.num_channels.to_string(),
            r.replicate.to_string(),
            r.message.clone(),
        ])
        .map_err(&err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a results.csv written by [`write_results`].
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let bad = |what: &str| CliError::Runtime(format!("{}: bad {what}", path.display()));
    let mut rows = Vec::new();
    for record in reader.records() {
        let rec = record.map_err(csv_err(path))?;
        let num = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad(RESULTS_HEADER[i]));
        let int = |i: usize| rec.get(i).and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| bad(RESULTS_HEADER[i]));
        rows.push(ResultRow {
            method: rec.get(0).ok_or_else(|| bad("method"))?.parse()?,
            num_train: int(1)?,
            num_channels: int(2)?,
            replicate: int(3)?,
            auc: num(4)?,
            auc_lo: num(5)?,
            auc_hi: num(6)?,
            seconds: num(7)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSeeds {
    pub replicate: usize,
    pub split: String,
    pub absent: usize,
    pub present: usize,
    pub absent_background_seed: u64,
    pub present_background_seed: u64,
    pub absent_noise_seed: u64,
    pub present_noise_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub method: String,
    pub num_train: usize,
    pub num_channels: usize,
    pub replicate: usize,
    pub bootstrap_seed: u64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub version: String,
    pub master_seed: u64,
    /// `--point` filter of the run, if any.
    pub point: Option<String>,
    pub roi_permutation_seeds: Vec<u64>,
    pub reference_background_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub run: RunInfo,
    pub config: ExperimentConfig,
    pub datasets: Vec<DatasetSeeds>,
    pub points: Vec<PointRecord>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let text = toml::to_string(manifest).map_err(CliError::runtime)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn write_plot_script(path: &Path) -> Result<(), CliError> {
    fs::write(path, PLOT_SCRIPT_TEXT)?;
    Ok(())
}

const PLOT_SCRIPT_TEXT: &str = r#"#!/usr/bin/env python3
"""Plot results.csv: AUC vs training size and AUC vs channel count.

Usage: python plot_results.py [results.csv] [out_prefix]
"""
import sys

import matplotlib.pyplot as plt
import pandas as pd

path = sys.argv[1] if len(sys.argv) > 1 else "results.csv"
prefix = sys.argv[2] if len(sys.argv) > 2 else "auc"
df = pd.read_csv(path)
chan = df[df.num_channels > 0]
ref = df[df.num_channels == 0]

def summarize(frame, key):
    g = frame.groupby(["method", key])
    return g.agg(auc=("auc", "mean"), lo=("auc_lo", "mean"), hi=("auc_hi", "mean")).reset_index()

if not chan.empty:
    d_max = chan.num_channels.max()
    s = summarize(chan[chan.num_channels == d_max], "num_train")
    fig, ax = plt.subplots()
    for method, m in s.groupby("method"):
        ax.errorbar(m.num_train, m.auc, yerr=[m.auc - m.lo, m.hi - m.auc], marker="o", capsize=3, label=method)
    for method, m in ref.groupby("method"):
        ax.axhline(m.auc.mean(), linestyle="--", color="gray", label=method)
    ax.set_xscale("log")
    ax.set_xlabel("training images")
    ax.set_ylabel("AUC")
    ax.set_title(f"{d_max} channels")
    ax.legend()
    fig.savefig(f"{prefix}_vs_train.png", dpi=150)

    n_fix = chan.num_train.max()
    s = summarize(chan[chan.num_train == n_fix], "num_channels")
    fig, ax = plt.subplots()
    for method, m in s.groupby("method"):
        ax.plot(m.num_channels, m.auc, marker=".", label=method)
        ax.fill_between(m.num_channels, m.lo, m.hi, alpha=0.2)
    ax.set_xlabel("channels")
    ax.set_ylabel("AUC")
    ax.set_title(f"{n_fix} training images")
    ax.legend()
    fig.savefig(f"{prefix}_vs_channels.png", dpi=150)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_roundtrip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RESULTS_FILE);
        let rows = vec![
            ResultRow {
                method: Method::Lgrad,
                num_train: 2000,
                num_channels: 50,
                replicate: 3,
                auc: 0.1 + 0.2,
                auc_lo: 0.8123456789012345,
                auc_hi: 1.0,
                seconds: 0.25,
            },
            ResultRow {
                method: Method::HoCmd,
                num_train: 40000,
                num_channels: 0,
                replicate: 0,
                auc: 0.87,
                auc_lo: 0.86,
                auc_hi: 0.88,
                seconds: 1.5,
            },
        ];
        write_results(&path, &rows).unwrap();
        assert_eq!(read_results(&path).unwrap(), rows);
    }

    #[test]
    fn error_messages_are_quoted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ERRORS_FILE);
        let row = ErrorRow {
            method: Method::Pls,
            num_train: 10,
            num_channels: 20,
            replicate: 0,
            message: "bad, \"quoted\" value".into(),
        };
        write_errors(&path, &[row]).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let rec = reader.records().next().unwrap().unwrap();
        assert_eq!(&rec[4], "bad, \"quoted\" value");
    }
}
