//! Output files: trajectory tables, equilibrium tables and run manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lienet::equilibria::{EnergyCasimirReport, EquilibriumRecord, Multipliers};
use lienet::integrate::Trajectory;
use serde::Serialize;

use crate::CliError;

pub fn fmt(x: f64) -> String {
    if x.is_finite() { format!("{x:.16e}") } else { String::new() }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = BufWriter::new(File::create(path)?);
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// `time,energy,casimir_total,mx,my,mz`, plus `casimir2_total` for heavy tops.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let heavy = traj.casimirs.first().and_then(|c| c.total_secondary()).is_some();
    let mut header = vec!["time", "energy", "casimir_total", "mx", "my", "mz"];
    if heavy {
        header.push("casimir2_total");
    }
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..traj.len() {
        let m = traj.magnetisation[k];
        let mut rec = vec![fmt(traj.times[k]), fmt(traj.energies[k]), fmt(traj.casimirs[k].total()), fmt(m.x), fmt(m.y), fmt(m.z)];
        if let Some(c2) = traj.casimirs[k].total_secondary() {
            rec.push(fmt(c2));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Scatter table of equilibria.
pub fn write_equilibria(
    path: &Path,
    records: &[EquilibriumRecord],
    reports: &[Option<EnergyCasimirReport>],
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record([
        "index",
        "group",
        "multiplicity",
        "class",
        "lambda1",
        "lambda",
        "spectral_abscissa",
        "linearly_stable",
        "energy_casimir",
    ])
    .map_err(csv_err)?;
    for (r, rep) in records.iter().zip(reports) {
        let (l1, l) = match r.multipliers {
            Multipliers::Momentum { lambda } => (String::new(), fmt(lambda)),
            Multipliers::Position { lambda1, lambda2 } => (fmt(lambda1), fmt(lambda2)),
        };
        let class = serde_json::to_value(r.class).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let ec = rep
            .and_then(|x| serde_json::to_value(x.verdict).ok())
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        w.write_record([
            r.index.to_string(),
            r.group.to_string(),
            r.multiplicity.to_string(),
            class,
            l1,
            l,
            r.spectral_abscissa.map(fmt).unwrap_or_default(),
            r.is_linearly_stable().map(|b| b.to_string()).unwrap_or_default(),
            ec,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Run record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub parallel: bool,
    pub started: String,
    pub finished: String,
    pub wall_time_s: f64,
    pub config: &'a C,
    pub outputs: Vec<PathBuf>,
}
