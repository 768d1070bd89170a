//! Runs one scenario over several resolutions and summarizes the trends.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Params, Value};
use crate::formats::{self, FormatError};
use crate::scenarios::{find, ScenarioError, Settings};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub passed: bool,
    pub c0: Option<f64>,
    pub momentum_lipschitz: Option<f64>,
    pub hjb_residual: Option<f64>,
    /// Set when the run at this `n` failed; the sweep continues.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
    /// `|c0(n_{i+1}) − c0(n_i)|` over consecutive successful runs.
    pub c0_gaps: Vec<f64>,
    /// Each gap is no larger than the previous one.
    pub c0_gaps_shrinking: bool,
    /// `max / min` of the Lipschitz estimates (1 when all are equal, including all zero).
    pub lipschitz_ratio: Option<f64>,
    /// `hjb(n_i) / hjb(n_{i+1})`.
    pub hjb_ratios: Vec<f64>,
}

impl SweepReport {
    /// Every run succeeded and passed its checks.
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    /// Lipschitz estimates stay within a factor two of each other.
    pub fn lipschitz_stable(&self) -> bool {
        self.lipschitz_ratio.is_none_or(|r| r <= 2.0)
    }

    /// `<outdir>/<scenario>/sweep/{sweep.json, sweep.csv}`.
    pub fn write(&self, outdir: &Path) -> Result<PathBuf, FormatError> {
        let dir = outdir.join(&self.scenario).join("sweep");
        formats::write_json(&dir.join("sweep.json"), self)?;
        let mut w = csv::Writer::from_writer(formats::create(&dir.join("sweep.csv"))?);
        w.write_record(["n", "passed", "c0", "momentum_lipschitz", "hjb_residual", "error"])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.passed.to_string(),
                opt(r.c0),
                opt(r.momentum_lipschitz),
                opt(r.hjb_residual),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| FormatError::Csv(e.into()))?;
        Ok(dir)
    }
}

/// Runs `name` at each `n` (on top of `base` parameters).
///
/// Only an unknown scenario or one without an `n` parameter is an error; per-run
/// failures are recorded in the rows.
pub fn refinement_sweep(
    name: &str,
    ns: &[usize],
    base: &Params,
    settings: &Settings,
) -> Result<SweepReport, ScenarioError> {
    let scenario = find(name)?;
    if !scenario.has_param("n") {
        return Err(ScenarioError::Config(crate::ConfigError::Invalid {
            key: "n".into(),
            message: format!("scenario `{name}` has no grid parameter"),
        }));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut params = base.clone();
        params.set("n", Value::Number(n as f64));
        let row = match scenario.run(&params, settings) {
            Ok(run) => SweepRow {
                n,
                passed: run.passed(),
                c0: run.c0(),
                momentum_lipschitz: run.momentum_lipschitz(),
                hjb_residual: run.hjb_residual(),
                error: None,
            },
            Err(e) => {
                log::warn!("{name} at n = {n}: {e}");
                SweepRow {
                    n,
                    passed: false,
                    c0: None,
                    momentum_lipschitz: None,
                    hjb_residual: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }

    let c0s: Vec<f64> = rows.iter().filter_map(|r| r.c0).collect();
    let c0_gaps: Vec<f64> = c0s.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let c0_gaps_shrinking = c0_gaps.windows(2).all(|g| g[1] <= g[0]);
    let lips: Vec<f64> = rows.iter().filter_map(|r| r.momentum_lipschitz).collect();
    let lipschitz_ratio = if lips.is_empty() {
        None
    } else {
        let lo = lips.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = lips.iter().cloned().fold(0.0f64, f64::max);
        Some(if hi == lo { 1.0 } else { hi / lo })
    };
    let hjbs: Vec<f64> = rows.iter().filter_map(|r| r.hjb_residual).collect();
    let hjb_ratios = hjbs.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(SweepReport {
        scenario: name.to_string(),
        rows,
        c0_gaps,
        c0_gaps_shrinking,
        lipschitz_ratio,
        hjb_ratios,
    })
}
