//! Fitting click logs into a reusable bundle.

use std::path::{Path, PathBuf};

use attribution_core::ingest::{fit_empirical, load_click_logs, BandwidthRule, FitBundle, FittedDist, FormatSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub platform_id: String,
    pub n_samples: usize,
    pub dropped: usize,
    pub bandwidth: f64,
}

/// Loads every platform in `inputs`, fits each with Scott's rule and saves
/// the bundle to `output`.
pub fn cmd_fit(inputs: &[PathBuf], output: &Path) -> Result<(Vec<FittedDist>, Vec<FitSummary>)> {
    if inputs.is_empty() {
        return Err(CliError::Usage("no input logs".into()));
    }
    let mut logs = Vec::new();
    for p in inputs {
        logs.extend(load_click_logs(p, FormatSpec::Auto)?);
    }
    for (k, l) in logs.iter().enumerate() {
        if logs[..k].iter().any(|o| o.platform_id == l.platform_id) {
            return Err(CliError::Usage(format!("platform `{}` appears in more than one input", l.platform_id)));
        }
        if l.dropped > 0 {
            log::info!("platform {}: dropped {} rows outside [-100, 0]", l.platform_id, l.dropped);
        }
    }
    let fits: Vec<FittedDist> = logs
        .par_iter()
        .map(|l| fit_empirical(l, BandwidthRule::Scott))
        .collect::<attribution_core::Result<_>>()?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    FitBundle::from_fits(&fits).save(output)?;
    let summary = logs
        .iter()
        .zip(&fits)
        .map(|(l, f)| FitSummary {
            platform_id: f.platform_id.clone(),
            n_samples: f.n_samples,
            dropped: l.dropped,
            bandwidth: f.bandwidth,
        })
        .collect();
    Ok((fits, summary))
}
