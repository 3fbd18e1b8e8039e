//! Grid sweeps over temperatures and the ε or τ grid.
//!
//! Learners sweep `temperatures × epsilons` (Bernstein) or
//! `temperatures × taus` (clipping); baselines ignore temperatures. With
//! `union_bound_delta` every cell runs with `δ/N` for an `N`-cell grid, so
//! the bounds hold simultaneously. A failing cell is recorded and the sweep
//! carries on.

use std::io::Write;
use std::path::PathBuf;

use super::{run_experiment, write_outputs, Algorithm, ExperimentConfig};
use crate::bounds::BoundKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub label: String,
    pub t1: f64,
    pub t2: f64,
    /// ε for Bernstein cells, τ for clipping cells.
    pub bound_param: f64,
    pub delta: f64,
    /// `(final mean avg_reward, final mean bound, CSV path)` or the error text.
    pub outcome: std::result::Result<(f64, f64, PathBuf), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<CellResult>,
    pub summary: PathBuf,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    /// Plain-text table of the final row of every cell.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<48} {:>7} {:>9} {:>7} {:>9} {:>11} {:>11}\n",
            "cell", "T1", "T2", "eps/tau", "delta", "avg_reward", "bound"
        );
        for c in &self.cells {
            let tail = match &c.outcome {
                Ok((r, b, _)) => format!("{r:>11.4} {b:>11.4}"),
                Err(e) => format!("FAILED: {e}"),
            };
            out.push_str(&format!(
                "{:<48} {:>7} {:>9.4} {:>7} {:>9.5} {tail}\n",
                c.label, c.t1, c.t2, c.bound_param, c.delta
            ));
        }
        out
    }
}

/// The cells of the grid described by `cfg`.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let params = match cfg.bound {
        BoundKind::Bernstein => &cfg.epsilons,
        BoundKind::Clipping => &cfg.taus,
    };
    let temps: Vec<(f64, f64)> = match cfg.algorithm {
        Algorithm::Lfs | Algorithm::Arr => vec![(cfg.t1, cfg.t2)],
        Algorithm::Pbvi | Algorithm::Pbmcmc => cfg.temperatures.clone(),
    };
    if params.is_empty() || temps.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut cells: Vec<SweepCell> = Vec::new();
    for &(t1, t2) in &temps {
        for &p in params {
            let mut c = cfg.clone();
            c.t1 = t1;
            c.t2 = t2;
            match cfg.bound {
                BoundKind::Bernstein => c.epsilon = p,
                BoundKind::Clipping => c.tau = p,
            }
            c.name = None;
            if !cells.iter().any(|e| e.config.label() == c.label()) {
                cells.push(SweepCell { config: c });
            }
        }
    }
    if cfg.union_bound_delta {
        let n = cells.len() as f64;
        for c in &mut cells {
            c.config.delta = cfg.delta / n;
        }
    }
    Ok(cells)
}

/// Runs every cell into `cfg.out_dir` and writes `summary.csv` there.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let cells = sweep_cells(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut results = Vec::with_capacity(cells.len());
    for cell in cells {
        let c = &cell.config;
        let outcome = run_experiment(c)
            .and_then(|res| {
                let files = write_outputs(c, &res, &cfg.out_dir)?;
                let last = res.final_row();
                Ok((last.mean_avg_reward, last.mean_bound, files.csv))
            })
            .map_err(|e| e.to_string());
        results.push(CellResult {
            label: c.label(),
            t1: c.t1,
            t2: c.effective_t2(),
            bound_param: match c.bound {
                BoundKind::Bernstein => c.epsilon,
                BoundKind::Clipping => c.tau,
            },
            delta: c.delta,
            outcome,
        });
    }
    let summary = cfg.out_dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(std::fs::File::create(&summary)?);
    w.write_record([
        "cell",
        "t1",
        "t2",
        "bound_param",
        "delta",
        "final_mean_avg_reward",
        "final_mean_bound",
        "status",
    ])?;
    for c in &results {
        let (r, b, status) = match &c.outcome {
            Ok((r, b, _)) => (format!("{r}"), format!("{b}"), "ok".to_string()),
            Err(e) => (String::new(), String::new(), format!("error: {e}")),
        };
        w.write_record([
            c.label.clone(),
            format!("{}", c.t1),
            format!("{}", c.t2),
            format!("{}", c.bound_param),
            format!("{}", c.delta),
            r,
            b,
            status,
        ])?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(SweepOutcome {
        cells: results,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_and_union_delta() {
        let cfg = ExperimentConfig {
            union_bound_delta: true,
            ..ExperimentConfig::default()
        };
        let cells = sweep_cells(&cfg).unwrap();
        assert_eq!(cells.len(), 9);
        assert!(cells.iter().all(|c| (c.config.delta - 0.05 / 9.0).abs() < 1e-18));
        let arr = ExperimentConfig {
            algorithm: Algorithm::Arr,
            ..ExperimentConfig::default()
        };
        assert_eq!(sweep_cells(&arr).unwrap().len(), 3);
        let empty = ExperimentConfig {
            taus: vec![],
            ..ExperimentConfig::default()
        };
        assert!(matches!(sweep_cells(&empty), Err(Error::Config(_))));
    }
}
