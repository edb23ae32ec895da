//! CSV, `run.meta` and gnuplot emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::experiments::{SpectrumSnapshot, SweepResult};

use super::config::RunConfig;
use super::CliError;

pub const SWEEP_HEADER: &str = "sweep_var,sweep_value,algorithm,rmse_deg,mc,seed";
pub const SPECTRUM_HEADER: &str = "theta_deg,algorithm,pq_db";

pub fn sweep_csv(results: &[SweepResult<f64>]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in results {
        for a in &r.rmse {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.variable.name(),
                r.value,
                a.algorithm.name(),
                a.rmse_deg,
                r.num_trials,
                r.master_seed
            );
        }
    }
    s
}

pub fn spectrum_csv(snapshot: &SpectrumSnapshot<f64>) -> String {
    let mut s = format!("{SPECTRUM_HEADER}\n");
    for curve in &snapshot.curves {
        for (theta, pq) in snapshot.theta_deg.iter().zip(&curve.pq_db) {
            let _ = writeln!(s, "{theta},{},{pq}", curve.algorithm.name());
        }
    }
    s
}

pub fn meta(config: &RunConfig) -> String {
    format!(
        "# rydoa {}\n# config digest {:016x}\n{}",
        env!("CARGO_PKG_VERSION"),
        config.digest(),
        config.to_meta()
    )
}

/// File-name tag for an outlier percentage, e.g. `eta20` or `eta12.5`.
pub fn eta_tag(eta_pct: f64) -> String {
    format!("eta{eta_pct}")
}

/// Gnuplot script plotting every CSV in `files` side by side.
pub fn gnuplot(config: &RunConfig, files: &[PathBuf]) -> String {
    let mut s =
        String::from("set datafile separator ','\nset key autotitle columnhead\nset grid\n");
    let (xlabel, ylabel, logscale) = match config.experiment {
        super::config::ExperimentKind::Spectrum => ("theta (deg)", "P_Q (dB)", false),
        super::config::ExperimentKind::SweepCorruption => {
            ("outlier fraction (%)", "RMSE (deg)", true)
        }
        super::config::ExperimentKind::SweepSnr => ("SNR (dB)", "RMSE (deg)", true),
    };
    let _ = writeln!(s, "set xlabel '{xlabel}'\nset ylabel '{ylabel}'");
    if logscale {
        s.push_str("set logscale y\n");
    }
    let (x, y, group) = match config.experiment {
        super::config::ExperimentKind::Spectrum => (1, 3, 2),
        _ => (2, 4, 3),
    };
    for (i, f) in files.iter().enumerate() {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let plots: Vec<String> = config
            .penalty
            .algorithms()
            .iter()
            .map(|a| {
                format!(
                    "'{name}' using {x}:(strcol({group}) eq '{alg}' ? ${y} : 1/0) with lines title '{alg}'",
                    alg = a.name()
                )
            })
            .collect();
        if i > 0 {
            s.push_str("pause -1\n");
        }
        let _ = writeln!(s, "set title '{name}'\nplot {}", plots.join(", \\\n     "));
    }
    s
}

/// Writes files into one directory, removing everything it wrote if any write fails.
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            let _ = fs::remove_file(&path);
            self.abort();
            return Err(CliError::Io { path, source: e });
        }
        self.written.push(path.clone());
        Ok(path)
    }

    /// Removes every file written so far.
    pub fn abort(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }

    pub fn finish(self) -> Vec<PathBuf> {
        self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Algorithm, AlgorithmRmse, SweepVariable};
    use crate::model::Scene;

    #[test]
    fn empty_results_give_header_only() {
        assert_eq!(sweep_csv(&[]), format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn sweep_rows_in_full_precision() {
        let r = SweepResult {
            variable: SweepVariable::EtaPercent,
            value: 20.0,
            rmse: vec![
                AlgorithmRmse {
                    algorithm: Algorithm::QMusic,
                    rmse_deg: 0.1 + 0.2,
                    degraded_trials: 0,
                    failed_trials: 0,
                },
                AlgorithmRmse {
                    algorithm: Algorithm::RobQMusic,
                    rmse_deg: 1.0 / 3.0,
                    degraded_trials: 0,
                    failed_trials: 0,
                },
            ],
            num_trials: 20,
            master_seed: 7,
            scene: Scene::new(8, 20, vec![0.0], 1e-18, 0.0, 7),
        };
        let csv = sweep_csv(&[r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "eta_pct,20,QMUSIC,0.30000000000000004,20,7");
        assert_eq!(lines[2], "eta_pct,20,ROBQMUSIC,0.3333333333333333,20,7");
    }

    #[test]
    fn failed_write_removes_earlier_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        let first = w.write("a.csv", "x\n").unwrap();
        assert!(first.exists());
        let err = w.write("missing/b.csv", "y\n").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("missing"));
        assert!(!first.exists());
    }

    #[test]
    fn eta_tags() {
        assert_eq!(eta_tag(20.0), "eta20");
        assert_eq!(eta_tag(12.5), "eta12.5");
    }
}
