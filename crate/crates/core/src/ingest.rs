//! Click logs and kernel-density fits.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dist::{make_tabulated, TimeDist};
use crate::error::{Error, Result};

/// Timestamps outside `[RANGE_LO, 0]` are dropped on load.
pub const RANGE_LO: f64 = -100.0;
/// Left end of a fitted law's support.
pub const SUPPORT_LO: f64 = -120.0;
/// Spacing of the tabulated cdf.
pub const GRID_STEP: f64 = 1e-3;
/// Fewer samples than this are refused.
pub const MIN_SAMPLES: usize = 30;
/// Half-width of the uniform used when all timestamps coincide.
pub const DEGENERATE_HALF_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub platform_id: String,
    pub timestamps: Vec<f64>,
    /// Rows discarded for falling outside `[-100, 0]`.
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormatSpec {
    /// One field per row means bare timestamps, two mean `platform,timestamp`.
    #[default]
    Auto,
    SingleColumn,
    PlatformTimestamp,
}

fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim().replace('\u{2212}', "-");
    s.parse::<f64>().ok().filter(|v| !v.is_nan())
}

/// Every platform found in `path`, in order of first appearance. Bare
/// timestamp files are named after the file stem.
pub fn load_click_logs(path: &Path, format: FormatSpec) -> Result<Vec<ClickLog>> {
    let display = path.display().to_string();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "platform".into());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(e, &display))?;
    let mut logs: Vec<ClickLog> = Vec::new();
    let mut first = true;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(e, &display))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = rec.iter().filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        if first {
            first = false;
            if parse_time(fields[fields.len() - 1]).is_none() {
                continue; // header row
            }
        }
        let bad = |msg: String| Error::Parse { path: display.clone(), line, msg };
        let (platform, raw) = match (format, fields.len()) {
            (FormatSpec::SingleColumn, 1) | (FormatSpec::Auto, 1) => (stem.as_str(), fields[0]),
            (FormatSpec::PlatformTimestamp, 2) | (FormatSpec::Auto, 2) => (fields[0], fields[1]),
            (_, k) => return Err(bad(format!("expected {format:?} row, found {k} fields"))),
        };
        let t = parse_time(raw).ok_or_else(|| bad(format!("cannot parse timestamp {raw:?}")))?;
        let idx = match logs.iter().position(|l| l.platform_id == platform) {
            Some(k) => k,
            None => {
                logs.push(ClickLog { platform_id: platform.to_string(), timestamps: vec![], dropped: 0 });
                logs.len() - 1
            }
        };
        if (RANGE_LO..=0.0).contains(&t) {
            logs[idx].timestamps.push(t);
        } else {
            logs[idx].dropped += 1;
        }
    }
    logs.retain(|l| !l.timestamps.is_empty() || l.dropped > 0);
    if logs.is_empty() || logs.iter().all(|l| l.timestamps.is_empty()) {
        return Err(Error::EmptyInput(format!("{display}: no timestamps in [-100, 0]")));
    }
    Ok(logs)
}

/// A single-platform log.
pub fn load_click_log(path: &Path, format: FormatSpec) -> Result<ClickLog> {
    let mut logs = load_click_logs(path, format)?;
    if logs.len() > 1 {
        return Err(Error::InvalidArgument(format!(
            "{}: {} platforms found; load them with load_click_logs",
            path.display(),
            logs.len()
        )));
    }
    let log = logs.pop().unwrap();
    if log.timestamps.is_empty() {
        return Err(Error::EmptyInput(format!("{}: no timestamps in [-100, 0]", path.display())));
    }
    Ok(log)
}

fn csv_error(e: csv::Error, path: &str) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { path: path.to_string(), line, msg: format!("{other:?}") },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandwidthRule {
    /// `h = σ m^{-1/5}` with the sample standard deviation `σ`.
    #[default]
    Scott,
}

impl BandwidthRule {
    pub fn bandwidth(&self, xs: &[f64]) -> f64 {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        match self {
            BandwidthRule::Scott => var.sqrt() * m.powf(-0.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedDist {
    pub platform_id: String,
    pub dist: TimeDist,
    pub bandwidth: f64,
    pub n_samples: usize,
}

/// Serialized form of a fitted law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRecord {
    pub platform_id: String,
    pub grid: Vec<f64>,
    pub cdf_values: Vec<f64>,
    pub bandwidth: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBundle {
    pub distributions: Vec<FittedRecord>,
}

impl FittedDist {
    pub fn to_record(&self) -> FittedRecord {
        let (grid, cdf) = self.dist.table().expect("fitted laws are tabulated");
        FittedRecord {
            platform_id: self.platform_id.clone(),
            grid: grid.to_vec(),
            cdf_values: cdf.to_vec(),
            bandwidth: self.bandwidth,
            n_samples: self.n_samples,
        }
    }

    pub fn from_record(rec: FittedRecord) -> Result<Self> {
        Ok(Self {
            dist: make_tabulated(rec.grid, rec.cdf_values)?,
            platform_id: rec.platform_id,
            bandwidth: rec.bandwidth,
            n_samples: rec.n_samples,
        })
    }
}

impl FitBundle {
    pub fn from_fits(fits: &[FittedDist]) -> Self {
        Self { distributions: fits.iter().map(FittedDist::to_record).collect() }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }

    pub fn into_fits(self) -> Result<Vec<FittedDist>> {
        self.distributions.into_iter().map(FittedDist::from_record).collect()
    }
}

/// Points of the canonical grid `-120, -119.999, ..., 0`.
pub fn fit_grid() -> Vec<f64> {
    let n = (-SUPPORT_LO / GRID_STEP).round() as usize;
    (0..=n).map(|k| (k as f64 - n as f64) * GRID_STEP).collect()
}

/// Gaussian KDE on `[-120, 0]`, renormalized, tabulated on the 1e-3 grid.
pub fn fit_empirical(log: &ClickLog, rule: BandwidthRule) -> Result<FittedDist> {
    let xs = &log.timestamps;
    if xs.len() < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "platform {}: {} samples, at least {MIN_SAMPLES} needed",
            log.platform_id,
            xs.len()
        )));
    }
    let h = rule.bandwidth(xs);
    if !(h > 0.0) {
        let x = xs[0];
        log::warn!(
            "platform {}: all timestamps equal {x}; using a uniform of half-width {DEGENERATE_HALF_WIDTH}",
            log.platform_id
        );
        let hi = (x + DEGENERATE_HALF_WIDTH).min(0.0);
        let lo = hi - 2.0 * DEGENERATE_HALF_WIDTH;
        return Ok(FittedDist {
            platform_id: log.platform_id.clone(),
            dist: make_tabulated(vec![lo, hi], vec![0.0, 1.0])?,
            bandwidth: 0.0,
            n_samples: xs.len(),
        });
    }
    let grid = fit_grid();
    let density = kde_on_grid(xs, h, grid.len());
    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for w in density.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * GRID_STEP;
        cdf.push(acc);
    }
    let mass = acc;
    if !(mass > 0.0) {
        return Err(Error::InvalidDist(format!("platform {}: KDE has no mass on [-120, 0]", log.platform_id)));
    }
    for c in cdf.iter_mut() {
        *c /= mass;
    }
    Ok(FittedDist {
        platform_id: log.platform_id.clone(),
        dist: make_tabulated(grid, cdf)?,
        bandwidth: h,
        n_samples: xs.len(),
    })
}

/// KDE values at the `n` grid nodes from linear binning and an FFT
/// convolution with the sampled Gaussian kernel.
fn kde_on_grid(xs: &[f64], h: f64, n: usize) -> Vec<f64> {
    let mut bins = vec![0.0; n];
    for &x in xs {
        let pos = (x - SUPPORT_LO) / GRID_STEP;
        let k = (pos.floor() as usize).min(n - 2);
        let w = (pos - k as f64).clamp(0.0, 1.0);
        bins[k] += 1.0 - w;
        bins[k + 1] += w;
    }
    let reach = ((8.0 * h / GRID_STEP).ceil() as usize).min(n);
    let size = (n + reach + 1).next_power_of_two();
    let mut kernel = vec![Complex::new(0.0, 0.0); size];
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let mut ksum = 0.0;
    for d in 0..=reach {
        let z = d as f64 * GRID_STEP / h;
        let v = norm * (-0.5 * z * z).exp();
        kernel[d].re = v;
        ksum += v;
        if d > 0 {
            kernel[size - d].re = v;
            ksum += v;
        }
    }
    // keep the discrete kernel mass-preserving when h is near the grid step
    let scale = 1.0 / (ksum * GRID_STEP);
    let mut data: Vec<Complex<f64>> = (0..size)
        .map(|k| Complex::new(if k < n { bins[k] } else { 0.0 }, 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    fwd.process(&mut data);
    fwd.process(&mut kernel);
    for (a, b) in data.iter_mut().zip(&kernel) {
        *a *= b;
    }
    inv.process(&mut data);
    let m = xs.len() as f64;
    data[..n]
        .iter()
        .map(|c| (c.re * scale / (size as f64 * m)).max(0.0))
        .collect()
}
