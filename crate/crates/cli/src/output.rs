use std::fs;
use std::path::{Path, PathBuf};

use dipolar_core::dynamics::{EigenmodeSet, TrajectoryResult};
use dipolar_core::Ensemble;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::CliError;

/// Seventeen significant digits, enough to round-trip an f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn labels(ens: &Ensemble) -> Vec<String> {
    ens.channels().map(|c| c.label()).collect()
}

fn complex_header(ens: &Ensemble) -> Vec<String> {
    labels(ens)
        .into_iter()
        .flat_map(|l| [format!("{l}_re"), format!("{l}_im")])
        .collect()
}

/// Collects the files of one run under a single output directory.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write_rows(&mut self, name: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let werr = |e: csv::Error| CliError::Write {
            path: path.display().to_string(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(&path).map_err(werr)?;
        w.write_record(&header).map_err(werr)?;
        for r in rows {
            w.write_record(&r).map_err(werr)?;
        }
        w.flush().map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Row-major complex matrix; rows and columns are labelled by channel.
    pub fn matrix(&mut self, name: &str, ens: &Ensemble, m: &DMatrix<Complex64>) -> Result<(), CliError> {
        let mut header = vec!["channel".to_string()];
        header.extend(complex_header(ens));
        let rows = labels(ens)
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let mut row = vec![label];
                for j in 0..m.ncols() {
                    row.push(num(m[(i, j)].re));
                    row.push(num(m[(i, j)].im));
                }
                row
            })
            .collect();
        self.write_rows(name, header, rows)
    }

    pub fn eigenmodes(&mut self, name: &str, ens: &Ensemble, modes: &EigenmodeSet) -> Result<(), CliError> {
        let mut header = vec!["rate".to_string(), "shift".to_string()];
        header.extend(complex_header(ens));
        let rates = modes.rates();
        let shifts = modes.shifts();
        let rows = (0..modes.len())
            .map(|k| {
                let mut row = vec![num(rates[k]), num(shifts[k])];
                for c in modes.vector(k).iter() {
                    row.push(num(c.re));
                    row.push(num(c.im));
                }
                row
            })
            .collect();
        self.write_rows(name, header, rows)
    }

    /// time, per-channel re/im, population, emission_rate, then any extra
    /// named columns sampled at the same times.
    pub fn trajectory(
        &mut self,
        name: &str,
        ens: &Ensemble,
        traj: &TrajectoryResult,
        extra: &[(&str, &[f64])],
    ) -> Result<(), CliError> {
        let mut header = vec!["time".to_string()];
        header.extend(complex_header(ens));
        header.push("population".into());
        header.push("emission_rate".into());
        header.extend(extra.iter().map(|(n, _)| n.to_string()));
        let rows = (0..traj.times.len())
            .map(|i| {
                let mut row = vec![num(traj.times[i])];
                for c in traj.amplitudes[i].0.iter() {
                    row.push(num(c.re));
                    row.push(num(c.im));
                }
                row.push(num(traj.excited_population[i]));
                row.push(num(traj.emission_rate[i]));
                row.extend(extra.iter().map(|(_, col)| num(col[i])));
                row
            })
            .collect();
        self.write_rows(name, header, rows)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        fs::write(&path, text).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes metadata.json listing every file written so far.
    pub fn finish(mut self, metadata: serde_json::Value) -> Result<PathBuf, CliError> {
        let mut meta = metadata;
        let mut files = self.files.clone();
        files.push("metadata.json".into());
        meta["files"] = serde_json::json!(files);
        self.json("metadata.json", &meta)?;
        Ok(self.dir)
    }
}
